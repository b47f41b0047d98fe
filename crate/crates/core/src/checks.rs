//! The gradient-check suite: every tape primitive, one message passing
//! layer and the full loss.

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::batch::{GraphBatch, MaskPolicy, PAIRS_PER_GRAPH};
use crate::config::ModelConfig;
use crate::error::Result;
use crate::gradcheck::{grad_check, GradCheckConfig, GradCheckReport, GradFn};
use crate::molgraph::{AtomCategory, BondCategory, MolGraph, N_SLOTS};
use crate::mpnn::{GraphState, MpnnStack, PairMask};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tape::{Fault, Tape, Var};
use crate::tensor::Tensor;
use crate::vae::Architecture;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Primitive {
    Add,
    Sub,
    Mul,
    Scale,
    AddBias,
    MatMul,
    BatchMatMul,
    Tanh,
    Sigmoid,
    Exp,
    Log,
    LogClamped,
    Softmax,
    MaskedSoftmax,
    Concat,
    Slice,
    Transpose,
    Sum,
    Mean,
    SumAxis,
    Reshape,
    GatherRows,
    MulConst,
}

impl Primitive {
    pub const ALL: [Primitive; 23] = [
        Primitive::Add,
        Primitive::Sub,
        Primitive::Mul,
        Primitive::Scale,
        Primitive::AddBias,
        Primitive::MatMul,
        Primitive::BatchMatMul,
        Primitive::Tanh,
        Primitive::Sigmoid,
        Primitive::Exp,
        Primitive::Log,
        Primitive::LogClamped,
        Primitive::Softmax,
        Primitive::MaskedSoftmax,
        Primitive::Concat,
        Primitive::Slice,
        Primitive::Transpose,
        Primitive::Sum,
        Primitive::Mean,
        Primitive::SumAxis,
        Primitive::Reshape,
        Primitive::GatherRows,
        Primitive::MulConst,
    ];

    pub fn name(self) -> String {
        format!("{self:?}").to_lowercase()
    }

    /// Parameter shapes the primitive is checked on.
    fn inputs(self) -> Vec<(&'static str, Vec<usize>)> {
        use Primitive::*;
        match self {
            Add | Sub | Mul => vec![("a", vec![3, 4]), ("b", vec![3, 4])],
            AddBias => vec![("a", vec![3, 4]), ("b", vec![4])],
            MatMul => vec![("a", vec![3, 4]), ("b", vec![4, 2])],
            BatchMatMul => vec![("a", vec![2, 3, 4]), ("b", vec![2, 4, 2])],
            Concat => vec![("a", vec![3, 2]), ("b", vec![3, 4])],
            Transpose => vec![("a", vec![2, 3, 4])],
            SumAxis | Reshape => vec![("a", vec![2, 3, 4])],
            _ => vec![("a", vec![3, 4])],
        }
    }

    fn positive(self) -> bool {
        matches!(self, Primitive::Log | Primitive::LogClamped)
    }
}

struct PrimitiveFn {
    op: Primitive,
    /// Fixed weighting so the loss is not a plain sum.
    weights: Vec<f64>,
}

impl PrimitiveFn {
    fn apply<F: Scalar>(&self, t: &mut Tape<'_, F>) -> Result<Var> {
        use Primitive::*;
        let a = t.param("a")?;
        Ok(match self.op {
            Add => {
                let b = t.param("b")?;
                t.add(a, b)?
            }
            Sub => {
                let b = t.param("b")?;
                t.sub(a, b)?
            }
            Mul => {
                let b = t.param("b")?;
                t.mul(a, b)?
            }
            Scale => t.scale(a, -1.7),
            AddBias => {
                let b = t.param("b")?;
                t.add_bias(a, b)?
            }
            MatMul => {
                let b = t.param("b")?;
                t.matmul(a, b)?
            }
            BatchMatMul => {
                let b = t.param("b")?;
                t.batch_matmul(a, b)?
            }
            Tanh => t.tanh(a),
            Sigmoid => t.sigmoid(a),
            Exp => t.exp(a),
            Log => t.log(a),
            LogClamped => t.log_clamped(a, 1e-10),
            Softmax => t.softmax_rows(a, None)?,
            MaskedSoftmax => {
                let mask = [true, false, true, true, false, true, true, true, true, true, false, false];
                t.softmax_rows(a, Some(&mask))?
            }
            Concat => {
                let b = t.param("b")?;
                t.concat(&[a, b])?
            }
            Slice => t.slice(a, 1, 3)?,
            Transpose => t.transpose(a)?,
            Sum => t.sum(a),
            Mean => t.mean(a),
            SumAxis => t.sum_axis(a, 1)?,
            Reshape => t.reshape(a, &[4, 6])?,
            GatherRows => t.gather_rows(a, &[2, 0, 2, 1])?,
            MulConst => {
                let c = Tensor::from_f64(&[3, 4], &self.weights[..12]).unwrap();
                t.mul_const(a, c)?
            }
        })
    }
}

impl GradFn for PrimitiveFn {
    fn eval<F: Scalar>(&self, t: &mut Tape<'_, F>) -> Result<Var> {
        let out = self.apply(t)?;
        let shape = t.shape(out).to_vec();
        let n = t.value(out).len();
        let w = t.constant(Tensor::from_f64(&shape, &self.weights[..n]).unwrap());
        let y = t.mul(out, w)?;
        Ok(t.sum(y))
    }
}

/// Checks one primitive on inputs drawn uniformly from `[−2, 2]`
/// (`[0.5, 2]` for logarithms).
pub fn check_primitive(op: Primitive, seed: u64, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::<f64>::new();
    for (name, shape) in op.inputs() {
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n)
            .map(|_| {
                if op.positive() {
                    rng.random_range(0.5..2.0)
                } else {
                    rng.random_range(-2.0..2.0)
                }
            })
            .collect();
        store.insert(name, Tensor::from_f64(&shape, &data)?);
    }
    let weights = (0..64).map(|_| rng.random_range(-1.5..1.5)).collect();
    grad_check(&PrimitiveFn { op, weights }, &store, cfg)
}

/// A C–N–O path with one double bond.
pub fn three_atom_graph() -> MolGraph {
    let mut g = MolGraph::from_atoms(&[AtomCategory::C, AtomCategory::N, AtomCategory::O]).unwrap();
    g.set_bond(0, 1, BondCategory::Single).unwrap();
    g.set_bond(1, 2, BondCategory::Double).unwrap();
    g
}

struct LayerFn {
    stack: MpnnStack,
    graph: MolGraph,
}

impl GradFn for LayerFn {
    fn eval<F: Scalar>(&self, t: &mut Tape<'_, F>) -> Result<Var> {
        let batch: GraphBatch<F> = GraphBatch::new(&[self.graph], None);
        let mask = PairMask::from_policy(MaskPolicy::ObservedEdges, &batch.bond_mask);
        let h = t.param("h0")?;
        let e = t.param("e0")?;
        let out = self.stack.propagate(t, GraphState { h, e }, &batch.topology, &mask)?;
        let hs = t.tanh(out.h);
        let es = t.tanh(out.e);
        let a = t.sum(hs);
        let b = t.sum(es);
        t.add(a, b)
    }
}

/// One full layer (with a width-changing projection) on a 3-atom graph,
/// checking every entry including the input states.
pub fn check_mpnn_layer(seed: u64, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let f = LayerFn {
        stack: MpnnStack::new("layer", 4, 3, &[5]),
        graph: three_atom_graph(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::<f64>::new();
    f.stack.init(&mut store, &mut rng);
    for (_, t) in store.iter_mut() {
        for x in t.data_mut() {
            *x += rng.random_range(-0.3..0.3);
        }
    }
    store.init_weight("h0", N_SLOTS, 4, &mut rng);
    store.init_weight("e0", PAIRS_PER_GRAPH, 3, &mut rng);
    grad_check(&f, &store, cfg)
}

struct ElboFn {
    arch: Architecture,
    graph: MolGraph,
    eps: Vec<f64>,
    beta: f64,
}

impl GradFn for ElboFn {
    fn eval<F: Scalar>(&self, t: &mut Tape<'_, F>) -> Result<Var> {
        let batch = self.arch.batch::<F>(&[self.graph]);
        let eps = Tensor::from_f64(&[1, self.eps.len()], &self.eps)?;
        Ok(self.arch.elbo_on_tape(t, &batch, &eps, self.beta, 1)?.total)
    }
}

/// Full loss on a 3-atom graph with fixed noise. `max_entries` limits the
/// checked entries per parameter tensor for large configurations.
pub fn check_elbo(config: ModelConfig, seed: u64, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let arch = Architecture::new(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::<f64>::new();
    arch.encoder.init(&mut store, &mut rng);
    arch.decoder.init(&mut store, &mut rng);
    // nonzero biases so every path is exercised
    for (_, t) in store.iter_mut() {
        for x in t.data_mut() {
            *x += rng.random_range(-0.1..0.1);
        }
    }
    let eps = (0..arch.config.latent_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let f = ElboFn {
        arch,
        graph: three_atom_graph(),
        eps,
        beta: 0.7,
    };
    grad_check(&f, &store, cfg)
}

/// Smaller widths for the exhaustive end-to-end check.
pub fn reduced_config() -> ModelConfig {
    ModelConfig {
        encoder_widths: vec![4, 6, 5],
        decoder_widths: vec![5, 4, 3],
        graph_width: 8,
        latent_dim: 3,
        set2set_steps: 2,
        conditional: false,
    }
}

#[derive(Debug, Clone)]
pub struct SuiteEntry {
    pub name: String,
    pub report: GradCheckReport,
}

/// Tolerances of the suite at 64-bit.
pub const PRIMITIVE_TOLERANCE: f64 = 1e-4;
pub const END_TO_END_TOLERANCE: f64 = 1e-3;

/// Runs everything: all primitives, one layer, the exhaustive reduced-width
/// loss, the conditional reduced-width loss and the default-width loss on
/// sampled entries.
pub fn run_suite(seed: u64, fault: Option<Fault>) -> Result<Vec<SuiteEntry>> {
    let prim = GradCheckConfig {
        tolerance: PRIMITIVE_TOLERANCE,
        fault,
        ..GradCheckConfig::default()
    };
    let e2e = GradCheckConfig {
        tolerance: END_TO_END_TOLERANCE,
        ..prim
    };
    let mut out = Vec::new();
    for (i, op) in Primitive::ALL.into_iter().enumerate() {
        out.push(SuiteEntry {
            name: format!("primitive/{}", op.name()),
            report: check_primitive(op, seed.wrapping_add(i as u64), &prim)?,
        });
    }
    out.push(SuiteEntry {
        name: "mpnn/layer".into(),
        report: check_mpnn_layer(seed, &prim)?,
    });
    out.push(SuiteEntry {
        name: "elbo/reduced".into(),
        report: check_elbo(reduced_config(), seed, &e2e)?,
    });
    out.push(SuiteEntry {
        name: "elbo/reduced-conditional".into(),
        report: check_elbo(
            ModelConfig {
                conditional: true,
                ..reduced_config()
            },
            seed,
            &e2e,
        )?,
    });
    out.push(SuiteEntry {
        name: "elbo/default".into(),
        report: check_elbo(
            ModelConfig::default(),
            seed,
            &GradCheckConfig {
                max_entries: Some(6),
                ..e2e
            },
        )?,
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_primitive_passes() {
        for op in Primitive::ALL {
            let r = check_primitive(op, 1, &GradCheckConfig::default()).unwrap();
            assert!(r.passed(), "{op:?}: {r:?}");
        }
    }

    #[test]
    fn layer_passes_and_fault_is_caught() {
        assert!(check_mpnn_layer(2, &GradCheckConfig::default()).unwrap().passed());
        let bad = GradCheckConfig {
            fault: Some(Fault::SigmoidBackward),
            ..GradCheckConfig::default()
        };
        let r = check_mpnn_layer(2, &bad).unwrap();
        assert!(!r.passed());
        assert!(r.failures().any(|p| p.name.starts_with("layer.l0.gru.")));
    }

    #[test]
    fn reduced_elbo_passes() {
        let cfg = GradCheckConfig {
            tolerance: END_TO_END_TOLERANCE,
            ..GradCheckConfig::default()
        };
        let r = check_elbo(reduced_config(), 3, &cfg).unwrap();
        assert!(r.passed(), "{:?}", r.failures().collect::<Vec<_>>());
    }
}
