//! Exact canonical labeling of small molecular graphs.
//!
//! Atoms are colored by element and the coloring is refined by neighbor
//! multisets until stable. Remaining ties are broken by individualizing each
//! candidate of the first non-singleton cell in turn and refining again; the
//! leaves of this search are discrete orderings and the canonical form is
//! the lexicographically smallest serialization among them. Interchangeable
//! atoms (same color, identical bonds to every other atom) are explored once.

use alloc::vec;
use alloc::vec::Vec;

use crate::molgraph::MolGraph;

/// Serialized isomorphism class of the occupied-atom subgraph:
/// `[atom count, element codes in canonical order…, bond codes of the upper
/// triangle in row-major order…]`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CanonicalForm(pub Vec<u8>);

impl CanonicalForm {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

struct Compact {
    elements: Vec<u8>,
    adj: Vec<Vec<u8>>,
}

fn compact(g: &MolGraph) -> Compact {
    let occ = g.occupied();
    let elements = occ.iter().map(|&u| g.atom(u).index() as u8).collect();
    let adj = occ
        .iter()
        .map(|&u| occ.iter().map(|&v| g.bond(u, v).index() as u8).collect())
        .collect();
    Compact { elements, adj }
}

fn serialize(c: &Compact, order: &[usize]) -> Vec<u8> {
    let n = order.len();
    let mut out = Vec::with_capacity(1 + n + n * (n.saturating_sub(1)) / 2);
    out.push(n as u8);
    out.extend(order.iter().map(|&i| c.elements[i]));
    for a in 0..n {
        for b in a + 1..n {
            out.push(c.adj[order[a]][order[b]]);
        }
    }
    out
}

/// Equitable refinement; colors become dense ranks `0..k` ordered
/// consistently with the input colors.
fn refine(c: &Compact, colors: &mut [u32]) {
    let n = colors.len();
    let mut classes = distinct(colors);
    loop {
        let sigs: Vec<(u32, Vec<(u8, u32)>)> = (0..n)
            .map(|i| {
                let mut nb: Vec<(u8, u32)> = (0..n)
                    .filter(|&j| j != i && c.adj[i][j] != 0)
                    .map(|j| (c.adj[i][j], colors[j]))
                    .collect();
                nb.sort_unstable();
                (colors[i], nb)
            })
            .collect();
        let mut sorted = sigs.clone();
        sorted.sort();
        sorted.dedup();
        for (i, s) in sigs.iter().enumerate() {
            colors[i] = sorted.binary_search(s).unwrap() as u32;
        }
        if sorted.len() == classes {
            return;
        }
        classes = sorted.len();
    }
}

fn distinct(colors: &[u32]) -> usize {
    let mut v = colors.to_vec();
    v.sort_unstable();
    v.dedup();
    v.len()
}

fn twins(c: &Compact, u: usize, v: usize) -> bool {
    (0..c.elements.len())
        .filter(|&w| w != u && w != v)
        .all(|w| c.adj[u][w] == c.adj[v][w])
}

fn search(c: &Compact, mut colors: Vec<u32>, best: &mut Option<Vec<u8>>) {
    refine(c, &mut colors);
    let n = colors.len();
    let k = distinct(&colors);
    if k == n {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| colors[i]);
        let form = serialize(c, &order);
        if best.as_ref().is_none_or(|b| form < *b) {
            *best = Some(form);
        }
        return;
    }
    // first non-singleton cell
    let mut size = vec![0usize; k];
    for &col in &colors {
        size[col as usize] += 1;
    }
    let target = size.iter().position(|&s| s > 1).unwrap() as u32;
    let members: Vec<usize> = (0..n).filter(|&i| colors[i] == target).collect();
    let mut reps: Vec<usize> = Vec::new();
    for &v in &members {
        if reps.iter().all(|&r| !twins(c, r, v)) {
            reps.push(v);
        }
    }
    for v in reps {
        let mut next: Vec<u32> = colors.iter().map(|&x| 2 * x + 1).collect();
        next[v] = 2 * colors[v];
        search(c, next, best);
    }
}

/// Canonical form of `g`, invariant under any permutation of its slots.
pub fn canonical_form(g: &MolGraph) -> CanonicalForm {
    let c = compact(g);
    if c.elements.is_empty() {
        return CanonicalForm(vec![0]);
    }
    let colors = c.elements.iter().map(|&e| e as u32).collect();
    let mut best = None;
    search(&c, colors, &mut best);
    CanonicalForm(best.unwrap())
}

/// Reference labeling: the lexicographically smallest serialization over
/// all `n!` atom orderings. Exponential; intended for small test graphs.
pub fn brute_force_form(g: &MolGraph) -> CanonicalForm {
    let c = compact(g);
    let n = c.elements.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut best = serialize(&c, &order);
    permute_all(&mut order, 0, &mut |o| {
        let f = serialize(&c, o);
        if f < best {
            best = f;
        }
    });
    CanonicalForm(best)
}

fn permute_all(v: &mut [usize], k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == v.len() {
        visit(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permute_all(v, k + 1, visit);
        v.swap(k, i);
    }
}
