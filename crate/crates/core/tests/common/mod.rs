#![allow(dead_code)]

use mpgvae_core::{AtomCategory, BondCategory, MolGraph, N_SLOTS};
use proptest::prelude::*;

const ELEMENTS: [AtomCategory; 4] = [AtomCategory::C, AtomCategory::N, AtomCategory::O, AtomCategory::F];
const BONDS: [BondCategory; 4] = [BondCategory::None, BondCategory::Single, BondCategory::Double, BondCategory::Triple];

/// Builds a graph from element codes and upper-triangle bond codes. With
/// `valid`, bonds that would exceed a valence are skipped.
pub fn build(elements: &[usize], bonds: &[usize], valid: bool) -> MolGraph {
    let atoms: Vec<AtomCategory> = elements.iter().map(|&e| ELEMENTS[e % 4]).collect();
    let mut g = MolGraph::from_atoms(&atoms).unwrap();
    let n = atoms.len();
    let mut k = 0;
    for u in 0..n {
        for v in u + 1..n {
            let b = BONDS[bonds[k % bonds.len()] % 4];
            k += 1;
            if b == BondCategory::None {
                continue;
            }
            let order = b.order() as u32;
            let fits = |x: usize| g.bond_order_sum(x) + order <= atoms[x].max_valence() as u32;
            if !valid || (fits(u) && fits(v)) {
                g.set_bond(u, v, b).unwrap();
            }
        }
    }
    g
}

fn bond_code() -> impl Strategy<Value = usize> {
    prop_oneof![5 => Just(0usize), 3 => Just(1usize), 1 => Just(2usize), 1 => Just(3usize)]
}

pub fn graph(max_atoms: usize, valid: bool) -> impl Strategy<Value = MolGraph> {
    (
        prop::collection::vec(0usize..4, 1..=max_atoms),
        prop::collection::vec(bond_code(), 36),
    )
        .prop_map(move |(e, b)| build(&e, &b, valid))
}

pub fn permutation() -> impl Strategy<Value = [usize; N_SLOTS]> {
    Just((0..N_SLOTS).collect::<Vec<_>>())
        .prop_shuffle()
        .prop_map(|v| v.try_into().unwrap())
}

/// Lexicographically smallest `[n, atoms…, upper bonds…]` over all orderings
/// of the occupied atoms.
pub fn oracle_form(g: &MolGraph) -> Vec<u8> {
    let occ = g.occupied();
    let mut order = occ.clone();
    let mut best: Option<Vec<u8>> = None;
    permutations(&mut order, 0, &mut |o| {
        let mut s = vec![o.len() as u8];
        s.extend(o.iter().map(|&u| g.atom(u).index() as u8));
        for i in 0..o.len() {
            for j in i + 1..o.len() {
                s.push(g.bond(o[i], o[j]).index() as u8);
            }
        }
        if best.as_ref().is_none_or(|b| s < *b) {
            best = Some(s);
        }
    });
    best.unwrap_or_else(|| vec![0])
}

fn permutations(v: &mut [usize], k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == v.len() {
        visit(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permutations(v, k + 1, visit);
        v.swap(k, i);
    }
}
