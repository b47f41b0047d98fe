//! Message passing over the dense pair layout of [`crate::batch`].
//!
//! One layer of width `d`:
//!
//! ```text
//! m_vw   = tanh(e_vw·W_e + h_v·W_hu + h_w·W_hw)        masked pairs only
//! a_vw   = softmax_w(m_vw·W_a)                          over masked w
//! m_v    = Σ_w a_vw m_vw                                zero if isolated
//! e'_vw  = m_vw
//! h'_v   = GRU(h_v·P, m_v)                              P only if widths differ
//! ```

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::batch::{MaskPolicy, Topology, DEGREE};
use crate::error::{Error, Result};
use crate::nn::{GruCell, Linear};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Node states `[N, d_h]` and edge states `[P, d_e]` on a tape.
#[derive(Debug, Clone, Copy)]
pub struct GraphState {
    pub h: Var,
    pub e: Var,
}

/// Pair-level masks for one batch under one policy.
#[derive(Debug, Clone)]
pub struct PairMask {
    /// Per pair row.
    pub pairs: Vec<bool>,
    /// Per `[N, 8]` attention entry; rows of isolated nodes are all `true`
    /// (their messages are zero, so the aggregate is zero regardless).
    pub attention: Vec<bool>,
}

impl PairMask {
    pub fn new(pairs: Vec<bool>) -> Self {
        let attention = pairs
            .chunks(DEGREE)
            .flat_map(|row| {
                let any = row.iter().any(|&b| b);
                row.iter().map(move |&b| b || !any)
            })
            .collect();
        PairMask { pairs, attention }
    }

    pub fn from_policy(policy: MaskPolicy, observed: &[bool]) -> Self {
        match policy {
            MaskPolicy::ObservedEdges => Self::new(observed.to_vec()),
            MaskPolicy::Complete => Self::new(alloc::vec![true; observed.len()]),
        }
    }

    fn expanded<F: Scalar>(&self, width: usize) -> Tensor<F> {
        let data = self
            .pairs
            .iter()
            .flat_map(|&b| core::iter::repeat_n(if b { F::one() } else { F::zero() }, width))
            .collect();
        Tensor::new(&[self.pairs.len(), width], data).unwrap()
    }
}

/// One message passing layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MpnnLayer {
    pub name: String,
    pub node_in: usize,
    pub edge_in: usize,
    pub width: usize,
}

impl MpnnLayer {
    fn p(&self, s: &str) -> String {
        format!("{}.{s}", self.name)
    }

    fn projection(&self) -> Option<Linear> {
        (self.node_in != self.width).then(|| Linear::new(self.p("proj"), self.node_in, self.width, false))
    }

    pub fn gru(&self) -> GruCell {
        GruCell::new(self.p("gru"), self.width, self.width)
    }

    pub fn init<F: Scalar, R: Rng + ?Sized>(&self, store: &mut ParamStore<F>, rng: &mut R) {
        store.init_weight(self.p("w_e"), self.edge_in, self.width, rng);
        store.init_weight(self.p("w_hu"), self.node_in, self.width, rng);
        store.init_weight(self.p("w_hw"), self.node_in, self.width, rng);
        store.init_weight(self.p("w_a"), self.width, 1, rng);
        if let Some(p) = self.projection() {
            p.init(store, rng);
        }
        self.gru().init(store, rng);
    }

    fn check(&self, tape: &Tape<'_, impl Scalar>, state: &GraphState) -> Result<()> {
        let (sh, se) = (tape.shape(state.h), tape.shape(state.e));
        if sh.len() != 2 || sh[1] != self.node_in || se.len() != 2 || se[1] != self.edge_in {
            return Err(Error::Shape {
                op: "mpnn layer",
                lhs: [sh, se].concat(),
                rhs: alloc::vec![self.node_in, self.edge_in],
            });
        }
        Ok(())
    }

    /// Messages `[P, d]`, zero on unmasked pairs.
    pub fn message<F: Scalar>(
        &self,
        tape: &mut Tape<'_, F>,
        state: &GraphState,
        topo: &Topology,
        mask: &PairMask,
    ) -> Result<Var> {
        self.check(tape, state)?;
        let w_e = tape.param(&self.p("w_e"))?;
        let w_hu = tape.param(&self.p("w_hu"))?;
        let w_hw = tape.param(&self.p("w_hw"))?;
        let from_e = tape.matmul(state.e, w_e)?;
        let hu = tape.matmul(state.h, w_hu)?;
        let hw = tape.matmul(state.h, w_hw)?;
        let hu = tape.gather_rows(hu, &topo.recv)?;
        let hw = tape.gather_rows(hw, &topo.nbr)?;
        let s = tape.add(from_e, hu)?;
        let s = tape.add(s, hw)?;
        let m = tape.tanh(s);
        tape.mul_const(m, mask.expanded(self.width))
    }

    /// Returns the aggregated messages `[N, d]` and the attention
    /// coefficients `[N, 8]`.
    pub fn attend_aggregate<F: Scalar>(
        &self,
        tape: &mut Tape<'_, F>,
        messages: Var,
        topo: &Topology,
        mask: &PairMask,
    ) -> Result<(Var, Var)> {
        let n = topo.nodes();
        let w_a = tape.param(&self.p("w_a"))?;
        let logits = tape.matmul(messages, w_a)?;
        let logits = tape.reshape(logits, &[n, DEGREE])?;
        let attn = tape.softmax_rows(logits, Some(&mask.attention))?;
        let a3 = tape.reshape(attn, &[n, 1, DEGREE])?;
        let m3 = tape.reshape(messages, &[n, DEGREE, self.width])?;
        let agg = tape.batch_matmul(a3, m3)?;
        let agg = tape.reshape(agg, &[n, self.width])?;
        Ok((agg, attn))
    }

    pub fn node_update<F: Scalar>(&self, tape: &mut Tape<'_, F>, h: Var, aggregated: Var) -> Result<Var> {
        let h = match self.projection() {
            Some(p) => p.forward(tape, h)?,
            None => h,
        };
        self.gru().forward(tape, h, aggregated)
    }

    pub fn forward<F: Scalar>(
        &self,
        tape: &mut Tape<'_, F>,
        state: GraphState,
        topo: &Topology,
        mask: &PairMask,
    ) -> Result<GraphState> {
        let m = self.message(tape, &state, topo, mask)?;
        let e = edge_update(m);
        let (agg, _) = self.attend_aggregate(tape, m, topo, mask)?;
        let h = self.node_update(tape, state.h, agg)?;
        Ok(GraphState { h, e })
    }
}

/// Edge states after a layer are that layer's messages.
pub fn edge_update(messages: Var) -> Var {
    messages
}

/// A stack of layers with the given widths.
#[derive(Debug, Clone, PartialEq)]
pub struct MpnnStack {
    pub layers: Vec<MpnnLayer>,
}

impl MpnnStack {
    pub fn new(name: &str, node_in: usize, edge_in: usize, widths: &[usize]) -> Self {
        let mut layers = Vec::with_capacity(widths.len());
        let (mut h, mut e) = (node_in, edge_in);
        for (t, &w) in widths.iter().enumerate() {
            layers.push(MpnnLayer {
                name: format!("{name}.l{t}"),
                node_in: h,
                edge_in: e,
                width: w,
            });
            h = w;
            e = w;
        }
        MpnnStack { layers }
    }

    pub fn init<F: Scalar, R: Rng + ?Sized>(&self, store: &mut ParamStore<F>, rng: &mut R) {
        for l in &self.layers {
            l.init(store, rng);
        }
    }

    pub fn out_width(&self) -> usize {
        self.layers.last().map_or(0, |l| l.width)
    }

    pub fn propagate<F: Scalar>(
        &self,
        tape: &mut Tape<'_, F>,
        mut state: GraphState,
        topo: &Topology,
        mask: &PairMask,
    ) -> Result<GraphState> {
        for l in &self.layers {
            state = l.forward(tape, state, topo, mask)?;
        }
        Ok(state)
    }
}
