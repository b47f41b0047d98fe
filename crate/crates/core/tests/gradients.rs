use mpgvae_core::checks::{check_elbo, reduced_config, run_suite, END_TO_END_TOLERANCE};
use mpgvae_core::gradcheck::{grad_check, GradCheckConfig, GradFn};
use mpgvae_core::smiles::parse_smiles;
use mpgvae_core::tape::Fault;
use mpgvae_core::vae::Architecture;
use mpgvae_core::{ModelConfig, MolGraph, ParamStore, Scalar, Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn full_suite_passes_at_64_bit() {
    let start = std::time::Instant::now();
    let entries = run_suite(0, None).unwrap();
    for e in &entries {
        assert!(e.report.passed(), "{}: {:?}", e.name, e.report.failures().collect::<Vec<_>>());
    }
    assert!(entries.iter().any(|e| e.name == "elbo/default"));
    assert!(start.elapsed().as_secs() < 120, "{:?}", start.elapsed());
}

#[test]
fn injected_fault_names_the_affected_parameters() {
    let entries = run_suite(0, Some(Fault::SigmoidBackward)).unwrap();
    let failed: Vec<_> = entries.iter().filter(|e| !e.report.passed()).map(|e| e.name.as_str()).collect();
    assert!(failed.contains(&"primitive/sigmoid"));
    assert!(failed.contains(&"mpnn/layer"));
    assert!(failed.contains(&"elbo/reduced"));
    assert!(!failed.contains(&"primitive/tanh"));
}

struct TwoMolecules {
    arch: Architecture,
    graphs: [MolGraph; 2],
    eps: Vec<f64>,
}

impl GradFn for TwoMolecules {
    fn eval<F: Scalar>(&self, t: &mut Tape<'_, F>) -> mpgvae_core::Result<Var> {
        let batch = self.arch.batch::<F>(&self.graphs);
        let eps = Tensor::from_f64(&[2, self.eps.len() / 2], &self.eps)?;
        Ok(self.arch.elbo_on_tape(t, &batch, &eps, 1.0, 2)?.total)
    }
}

#[test]
fn two_molecule_batch_passes() {
    let config = ModelConfig { conditional: true, ..reduced_config() };
    let arch = Architecture::new(config).unwrap();
    let mut params = ParamStore::<f64>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    arch.encoder.init(&mut params, &mut rng);
    arch.decoder.init(&mut params, &mut rng);
    let graphs = [
        parse_smiles("C1=CC=CO1").unwrap(),
        parse_smiles("CC(=O)N").unwrap(),
    ];
    let eps = vec![0.3, -1.1, 0.7, 1.4, 0.2, -0.5];
    let f = TwoMolecules { arch, graphs, eps };
    let cfg = GradCheckConfig { tolerance: END_TO_END_TOLERANCE, ..GradCheckConfig::default() };
    let r = grad_check(&f, &params, &cfg).unwrap();
    assert!(r.passed(), "{:?}", r.failures().collect::<Vec<_>>());
}

#[test]
fn different_seeds_pass() {
    let cfg = GradCheckConfig { tolerance: END_TO_END_TOLERANCE, ..GradCheckConfig::default() };
    for seed in 10..13 {
        let r = check_elbo(reduced_config(), seed, &cfg).unwrap();
        assert!(r.passed(), "seed {seed}: {:?}", r.failures().collect::<Vec<_>>());
    }
}
