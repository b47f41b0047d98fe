//! Generative network: latent read-in, message passing over the complete
//! graph and per-node / per-edge categorical read-out.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::batch::{Topology, DEGREE, PAIRS_PER_GRAPH};
use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::molgraph::{AtomCategory, BondCategory, MolGraph, N_SLOTS};
use crate::mpnn::{GraphState, MpnnStack, PairMask};
use crate::nn::{GruCell, Linear};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Decoder outputs on a tape.
#[derive(Debug, Clone, Copy)]
pub struct DecodedVars {
    /// `[N, 5]`
    pub node_probs: Var,
    /// `[P, 4]`, equal on a pair and its reverse.
    pub pair_probs: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    pub latent_proj: Linear,
    pub read_in: GruCell,
    pub stack: MpnnStack,
    pub node_head: Linear,
    pub edge_head: Linear,
    pub latent_dim: usize,
    pub label_width: usize,
}

impl Decoder {
    pub fn new(cfg: &ModelConfig) -> Self {
        let w0 = cfg.decoder_widths[0];
        let lw = cfg.label_width();
        let stack = MpnnStack::new("dec.mpnn", w0, w0, &cfg.decoder_widths);
        let out = stack.out_width();
        Decoder {
            latent_proj: Linear::new("dec.latent", cfg.latent_dim + lw, cfg.graph_width, true),
            read_in: GruCell::new("dec.read_in", cfg.graph_width, w0),
            stack,
            node_head: Linear::new("dec.node_head", out, AtomCategory::COUNT, true),
            edge_head: Linear::new("dec.edge_head", out, BondCategory::COUNT, true),
            latent_dim: cfg.latent_dim,
            label_width: lw,
        }
    }

    pub fn init<F: Scalar, R: Rng + ?Sized>(&self, store: &mut ParamStore<F>, rng: &mut R) {
        self.latent_proj.init(store, rng);
        self.read_in.init(store, rng);
        self.stack.init(store, rng);
        self.node_head.init(store, rng);
        self.edge_head.init(store, rng);
    }

    /// Initial state from `z: [B, latent]` and, for a conditional model,
    /// labels `[B, 4]`: one recurrent cell unrolled over the slots with the
    /// projected latent as constant input. Edges start at zero.
    pub fn read_in<F: Scalar>(
        &self,
        tape: &mut Tape<'_, F>,
        z: Var,
        labels: Option<Var>,
    ) -> Result<GraphState> {
        let b = tape.shape(z)[0];
        let input = match (self.label_width, labels) {
            (0, _) => z,
            (_, Some(l)) => tape.concat(&[z, l])?,
            (_, None) => return Err(Error::Contract("conditional decoder needs labels")),
        };
        let hz = self.latent_proj.forward(tape, input)?;
        let hz = tape.sigmoid(hz);
        let w0 = self.read_in.hidden;
        let mut h = tape.constant(Tensor::zeros(&[b, w0]));
        let mut steps = Vec::with_capacity(N_SLOTS);
        for _ in 0..N_SLOTS {
            h = self.read_in.forward(tape, h, hz)?;
            steps.push(h);
        }
        let all = tape.concat(&steps)?;
        let h = tape.reshape(all, &[b * N_SLOTS, w0])?;
        let e = tape.constant(Tensor::zeros(&[b * PAIRS_PER_GRAPH, w0]));
        Ok(GraphState { h, e })
    }

    /// Symmetrizes edge states, then applies the two softmax heads.
    pub fn read_out<F: Scalar>(
        &self,
        tape: &mut Tape<'_, F>,
        state: GraphState,
        topo: &Topology,
    ) -> Result<DecodedVars> {
        let rev = tape.gather_rows(state.e, &topo.rev)?;
        let sum = tape.add(state.e, rev)?;
        let e = tape.scale(sum, 0.5);
        let nl = self.node_head.forward(tape, state.h)?;
        let el = self.edge_head.forward(tape, e)?;
        Ok(DecodedVars {
            node_probs: tape.softmax_rows(nl, None)?,
            pair_probs: tape.softmax_rows(el, None)?,
        })
    }

    pub fn decode<F: Scalar>(
        &self,
        tape: &mut Tape<'_, F>,
        z: Var,
        labels: Option<Var>,
    ) -> Result<DecodedVars> {
        let b = tape.shape(z)[0];
        let topo = Topology::new(b);
        let state = self.read_in(tape, z, labels)?;
        let mask = PairMask::new(alloc::vec![true; topo.pairs()]);
        let state = self.stack.propagate(tape, state, &topo, &mask)?;
        self.read_out(tape, state, &topo)
    }
}

/// Categorical distribution over graphs for one latent.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphDistribution {
    pub node_probs: [[f64; AtomCategory::COUNT]; N_SLOTS],
    /// Symmetric; the diagonal is NONE with probability 1.
    pub edge_probs: [[[f64; BondCategory::COUNT]; N_SLOTS]; N_SLOTS],
}

impl GraphDistribution {
    /// Splits batched decoder outputs into per-graph distributions.
    pub fn from_tape<F: Scalar>(tape: &Tape<'_, F>, d: &DecodedVars) -> Vec<Self> {
        let nodes = tape.value(d.node_probs).data();
        let pairs = tape.value(d.pair_probs).data();
        let b = nodes.len() / (N_SLOTS * AtomCategory::COUNT);
        (0..b)
            .map(|g| {
                let mut out = GraphDistribution {
                    node_probs: [[0.0; AtomCategory::COUNT]; N_SLOTS],
                    edge_probs: [[[0.0; BondCategory::COUNT]; N_SLOTS]; N_SLOTS],
                };
                for u in 0..N_SLOTS {
                    let row = g * N_SLOTS + u;
                    for c in 0..AtomCategory::COUNT {
                        out.node_probs[u][c] = nodes[row * AtomCategory::COUNT + c].as_f64();
                    }
                    out.edge_probs[u][u][BondCategory::None.index()] = 1.0;
                    for k in 0..DEGREE {
                        let w = crate::batch::neighbor(u, k);
                        let p = row * DEGREE + k;
                        for c in 0..BondCategory::COUNT {
                            out.edge_probs[u][w][c] = pairs[p * BondCategory::COUNT + c].as_f64();
                        }
                    }
                }
                out
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RealizeMode {
    Argmax,
    Sample { seed: u64 },
}

/// A realized graph plus how many edges were dropped because an endpoint
/// was realized as NONE.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Realized {
    pub graph: MolGraph,
    pub repaired_edges: usize,
}

fn draw(row: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let total: f64 = row.iter().sum();
    let mut acc = 0.0;
    for (i, &p) in row.iter().enumerate() {
        acc += p / total;
        if u < acc {
            return i;
        }
    }
    row.len() - 1
}

pub fn realize(dist: &GraphDistribution, mode: RealizeMode) -> Realized {
    let mut rng = match mode {
        RealizeMode::Sample { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        RealizeMode::Argmax => None,
    };
    let mut pick = |row: &[f64]| match rng.as_mut() {
        Some(r) => draw(row, r),
        None => crate::molgraph::argmax(row),
    };
    let mut atoms = [AtomCategory::None; N_SLOTS];
    for (u, a) in atoms.iter_mut().enumerate() {
        *a = AtomCategory::from_index(pick(&dist.node_probs[u])).unwrap();
    }
    let mut bonds = [[BondCategory::None; N_SLOTS]; N_SLOTS];
    let mut repaired = 0;
    for u in 0..N_SLOTS {
        for v in u + 1..N_SLOTS {
            let b = BondCategory::from_index(pick(&dist.edge_probs[u][v])).unwrap();
            if b == BondCategory::None {
                continue;
            }
            if atoms[u] == AtomCategory::None || atoms[v] == AtomCategory::None {
                repaired += 1;
                continue;
            }
            bonds[u][v] = b;
            bonds[v][u] = b;
        }
    }
    Realized {
        graph: MolGraph::from_parts(atoms, bonds).expect("realized graph satisfies invariants"),
        repaired_edges: repaired,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg(conditional: bool) -> ModelConfig {
        ModelConfig {
            encoder_widths: alloc::vec![4, 6],
            decoder_widths: alloc::vec![5, 3],
            graph_width: 8,
            latent_dim: 3,
            set2set_steps: 2,
            conditional,
        }
    }

    fn store(d: &Decoder, seed: u64) -> ParamStore<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParamStore::new();
        d.init(&mut s, &mut rng);
        s
    }

    fn dist_for(d: &Decoder, s: &ParamStore<f64>, z: &[f64], label: Option<&[f64]>) -> GraphDistribution {
        let mut t = Tape::new(s);
        let zv = t.constant(Tensor::from_f64(&[1, z.len()], z).unwrap());
        let lv = label.map(|l| t.constant(Tensor::from_f64(&[1, 4], l).unwrap()));
        let out = d.decode(&mut t, zv, lv).unwrap();
        GraphDistribution::from_tape(&t, &out).remove(0)
    }

    #[test]
    fn zero_weights_give_equal_node_states() {
        let d = Decoder::new(&small_cfg(false));
        let mut s = store(&d, 0);
        for (_, t) in s.iter_mut() {
            t.data_mut().fill(0.0);
        }
        let mut t = Tape::new(&s);
        let z = t.constant(Tensor::zeros(&[1, 3]));
        let st = d.read_in(&mut t, z, None).unwrap();
        let h = t.value(st.h).data();
        assert!(h.chunks(5).all(|r| r == &h[..5]));
        assert!(t.value(st.e).data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn random_weights_give_distinct_slots() {
        let d = Decoder::new(&small_cfg(false));
        let s = store(&d, 1);
        let mut t = Tape::new(&s);
        let z = t.constant(Tensor::from_f64(&[1, 3], &[0.3, -1.2, 0.8]).unwrap());
        let st = d.read_in(&mut t, z, None).unwrap();
        let h = t.value(st.h).data();
        for u in 0..N_SLOTS {
            for v in u + 1..N_SLOTS {
                let dist: f64 = (0..5).map(|c| (h[u * 5 + c] - h[v * 5 + c]).powi(2)).sum();
                assert!(dist > 0.0, "slots {u} and {v} coincide");
            }
        }
    }

    #[test]
    fn distribution_invariants_hold() {
        let d = Decoder::new(&small_cfg(false));
        let s = store(&d, 2);
        let dist = dist_for(&d, &s, &[1.0, 0.0, -2.0], None);
        for u in 0..N_SLOTS {
            assert!((dist.node_probs[u].iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(dist.edge_probs[u][u], [1.0, 0.0, 0.0, 0.0]);
            for v in 0..N_SLOTS {
                assert_eq!(dist.edge_probs[u][v], dist.edge_probs[v][u]);
                assert!((dist.edge_probs[u][v].iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
        assert_eq!(dist, dist_for(&d, &s, &[1.0, 0.0, -2.0], None));
    }

    #[test]
    fn antisymmetric_edges_give_uniform_probabilities() {
        let d = Decoder::new(&small_cfg(false));
        let mut s = store(&d, 3);
        s.init_zeros("dec.edge_head.b", &[4]);
        let topo = Topology::new(1);
        let mut t = Tape::new(&s);
        let h = t.constant(Tensor::zeros(&[9, 3]));
        let mut e = Tensor::zeros(&[72, 3]);
        for p in 0..72 {
            let sign = if topo.recv[p] < topo.nbr[p] { 1.0 } else { -1.0 };
            for c in 0..3 {
                e.data_mut()[p * 3 + c] = sign * (p.min(topo.rev[p]) as f64 + c as f64) * 0.1;
            }
        }
        let e = t.constant(e);
        let out = d.read_out(&mut t, GraphState { h, e }, &topo).unwrap();
        assert!(t.value(out.pair_probs).data().iter().all(|&p| p == 0.25));
    }

    #[test]
    fn conditional_decoder_depends_on_label() {
        let d = Decoder::new(&small_cfg(true));
        let s = store(&d, 4);
        let z = [0.1, 0.2, 0.3];
        let a = dist_for(&d, &s, &z, Some(&[0.5, 0.0, 0.1, 0.0]));
        let b = dist_for(&d, &s, &z, Some(&[0.0, 0.3, 0.0, 0.2]));
        assert_ne!(a.node_probs, b.node_probs);
    }

    fn peaked(atom: usize, bond: usize) -> GraphDistribution {
        let mut d = GraphDistribution {
            node_probs: [[0.0; 5]; 9],
            edge_probs: [[[0.0; 4]; 9]; 9],
        };
        for u in 0..9 {
            d.node_probs[u][atom] = 1.0;
            for v in 0..9 {
                d.edge_probs[u][v][if u == v { 0 } else { bond }] = 1.0;
            }
        }
        d
    }

    #[test]
    fn argmax_realization() {
        let mut d = peaked(0, 0);
        d.node_probs[0] = [0.1, 0.7, 0.1, 0.05, 0.05];
        let r = realize(&d, RealizeMode::Argmax);
        assert_eq!(r.graph.atom(0), AtomCategory::C);
        assert_eq!(r.graph.atom_count(), 1);
        let empty = realize(&peaked(0, 0), RealizeMode::Argmax);
        assert_eq!(empty.graph, MolGraph::empty());
        assert!(!empty.graph.is_valid());
    }

    #[test]
    fn none_atoms_drop_their_edges() {
        let mut d = peaked(0, 1);
        d.node_probs[0] = [0.0, 1.0, 0.0, 0.0, 0.0];
        d.node_probs[1] = [0.0, 1.0, 0.0, 0.0, 0.0];
        let r = realize(&d, RealizeMode::Argmax);
        assert_eq!(r.graph.bond_list(), alloc::vec![(0, 1, BondCategory::Single)]);
        assert_eq!(r.repaired_edges, 35);
    }

    #[test]
    fn sampling_is_reproducible() {
        let d = Decoder::new(&small_cfg(false));
        let s = store(&d, 5);
        let dist = dist_for(&d, &s, &[0.0, 0.5, 0.5], None);
        let a = realize(&dist, RealizeMode::Sample { seed: 9 });
        assert_eq!(a, realize(&dist, RealizeMode::Sample { seed: 9 }));
        let differs = (0..20).any(|s| realize(&dist, RealizeMode::Sample { seed: s }) != a);
        assert!(differs);
    }
}
