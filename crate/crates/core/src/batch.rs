//! Dense batched layout of molecular graphs.
//!
//! A batch of `B` graphs has `N = 9B` node rows (graph `b`, slot `u` at row
//! `9b + u`) and `P = 72B` directed pair rows. The pairs leaving a node are
//! contiguous: pair `8(9b + u) + k` is `(u, w)` with `w = k` for `k < u` and
//! `w = k + 1` otherwise, so self-pairs never appear and reshaping `[P, d]`
//! to `[N, 8, d]` groups each node's neighborhood.

use alloc::vec;
use alloc::vec::Vec;

use crate::molgraph::{AtomCategory, AtomHistogram, BondCategory, MolGraph, N_SLOTS};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Neighbor slots per node.
pub const DEGREE: usize = N_SLOTS - 1;
pub const PAIRS_PER_GRAPH: usize = N_SLOTS * DEGREE;
pub const UPPER_PER_GRAPH: usize = N_SLOTS * DEGREE / 2;

/// Which directed pairs exchange messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskPolicy {
    /// Pairs joined by a bond (encoder).
    ObservedEdges,
    /// Every pair of distinct slots (decoder).
    Complete,
}

/// Neighbor slot of local pair index `k` at node `u`.
pub fn neighbor(u: usize, k: usize) -> usize {
    if k < u {
        k
    } else {
        k + 1
    }
}

/// Local pair index of `w` as seen from `u` (`u != w`).
pub fn pair_slot(u: usize, w: usize) -> usize {
    debug_assert_ne!(u, w);
    if w < u {
        w
    } else {
        w - 1
    }
}

/// Index arrays over the pair rows of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub graphs: usize,
    /// Node row receiving each pair's message.
    pub recv: Vec<usize>,
    /// Node row sending each pair's message.
    pub nbr: Vec<usize>,
    /// Pair row of the reversed pair.
    pub rev: Vec<usize>,
    /// Pair rows of `(u, v)` with `u < v`, by graph then row-major.
    pub upper: Vec<usize>,
}

impl Topology {
    pub fn new(graphs: usize) -> Self {
        let p = graphs * PAIRS_PER_GRAPH;
        let mut recv = Vec::with_capacity(p);
        let mut nbr = Vec::with_capacity(p);
        let mut rev = Vec::with_capacity(p);
        let mut upper = Vec::with_capacity(graphs * UPPER_PER_GRAPH);
        for b in 0..graphs {
            for u in 0..N_SLOTS {
                for k in 0..DEGREE {
                    let w = neighbor(u, k);
                    recv.push(b * N_SLOTS + u);
                    nbr.push(b * N_SLOTS + w);
                    rev.push((b * N_SLOTS + w) * DEGREE + pair_slot(w, u));
                    if u < w {
                        upper.push((b * N_SLOTS + u) * DEGREE + k);
                    }
                }
            }
        }
        Topology { graphs, recv, nbr, rev, upper }
    }

    pub fn nodes(&self) -> usize {
        self.graphs * N_SLOTS
    }

    pub fn pairs(&self) -> usize {
        self.graphs * PAIRS_PER_GRAPH
    }
}

/// Conditioning features of an atom histogram: counts scaled by the slot
/// count so every entry lies in `[0, 1]`.
pub fn label_features(h: &AtomHistogram) -> [f64; 4] {
    h.map(|c| c as f64 / N_SLOTS as f64)
}

/// Everything the model needs from a list of target graphs.
#[derive(Debug, Clone)]
pub struct GraphBatch<F> {
    pub topology: Topology,
    /// `[N, 5]` one-hot atom categories (NONE included).
    pub atoms: Tensor<F>,
    /// `[P, 4]` one-hot bond categories of the directed pairs.
    pub pair_bonds: Tensor<F>,
    /// `[36B, 4]` one-hot bond targets of the upper pairs.
    pub upper_bonds: Tensor<F>,
    /// Atom present, per node row.
    pub node_mask: Vec<bool>,
    /// Bond present, per pair row.
    pub bond_mask: Vec<bool>,
    /// `[B, 4]` scaled histograms when labels are given.
    pub labels: Option<Tensor<F>>,
}

impl<F: Scalar> GraphBatch<F> {
    pub fn new(graphs: &[MolGraph], labels: Option<&[AtomHistogram]>) -> Self {
        let b = graphs.len();
        let topology = Topology::new(b);
        let mut atoms = vec![F::zero(); b * N_SLOTS * AtomCategory::COUNT];
        let mut pair_bonds = vec![F::zero(); b * PAIRS_PER_GRAPH * BondCategory::COUNT];
        let mut upper_bonds = vec![F::zero(); b * UPPER_PER_GRAPH * BondCategory::COUNT];
        let mut node_mask = Vec::with_capacity(b * N_SLOTS);
        let mut bond_mask = Vec::with_capacity(b * PAIRS_PER_GRAPH);
        let mut up = 0;
        for (gi, g) in graphs.iter().enumerate() {
            for u in 0..N_SLOTS {
                let row = gi * N_SLOTS + u;
                atoms[row * AtomCategory::COUNT + g.atom(u).index()] = F::one();
                node_mask.push(g.exists(u));
                for k in 0..DEGREE {
                    let w = neighbor(u, k);
                    let bond = g.bond(u, w);
                    pair_bonds[(row * DEGREE + k) * BondCategory::COUNT + bond.index()] = F::one();
                    bond_mask.push(bond != BondCategory::None);
                    if u < w {
                        upper_bonds[up * BondCategory::COUNT + bond.index()] = F::one();
                        up += 1;
                    }
                }
            }
        }
        let labels = labels.map(|ls| {
            assert_eq!(ls.len(), b, "one label per graph");
            let data: Vec<f64> = ls.iter().flat_map(label_features).collect();
            Tensor::from_f64(&[b, 4], &data).unwrap()
        });
        GraphBatch {
            topology,
            atoms: Tensor::new(&[b * N_SLOTS, AtomCategory::COUNT], atoms).unwrap(),
            pair_bonds: Tensor::new(&[b * PAIRS_PER_GRAPH, BondCategory::COUNT], pair_bonds).unwrap(),
            upper_bonds: Tensor::new(&[b * UPPER_PER_GRAPH, BondCategory::COUNT], upper_bonds).unwrap(),
            node_mask,
            bond_mask,
            labels,
        }
    }

    pub fn graphs(&self) -> usize {
        self.topology.graphs
    }

    pub fn pair_mask(&self, policy: MaskPolicy) -> Vec<bool> {
        match policy {
            MaskPolicy::ObservedEdges => self.bond_mask.clone(),
            MaskPolicy::Complete => vec![true; self.topology.pairs()],
        }
    }
}

/// Repeats each row of a `[B, w]` label tensor for the 9 slots of its graph.
pub fn per_node_labels<F: Scalar>(labels: &Tensor<F>) -> Tensor<F> {
    let w = labels.last_dim();
    let b = labels.len() / w;
    let mut data = Vec::with_capacity(b * N_SLOTS * w);
    for row in labels.data().chunks(w) {
        for _ in 0..N_SLOTS {
            data.extend_from_slice(row);
        }
    }
    Tensor::new(&[b * N_SLOTS, w], data).unwrap()
}
