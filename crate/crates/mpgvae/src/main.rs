use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mpgvae::commands::{
    cmd_eval, cmd_gradcheck, cmd_sample, cmd_train, inspect_checkpoint, inspect_data, EvalArgs, Precision,
};
use mpgvae::sample::{parse_label, Mode};
use mpgvae::CliError;
use mpgvae_core::tape::Fault;

#[derive(Parser)]
#[command(name = "mpgvae", version, about = "Message passing graph VAE for QM9-sized molecules")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Argmax,
    Sample,
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    SigmoidBackward,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; writes checkpoints, train_log.csv and loss_curve.svg.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Decode prior samples to a SMILES file plus a CSV sidecar.
    Sample {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = ModeArg::Argmax)]
        mode: ModeArg,
        /// Atom counts C,N,O,F for a conditional checkpoint.
        #[arg(long)]
        label: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Validity, uniqueness, novelty and discrete statistics of samples.
    Eval {
        #[arg(long)]
        samples: PathBuf,
        /// Training SMILES used for novelty.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Conditional checkpoint; adds conditional accuracy rows.
        #[arg(long)]
        ckpt: Option<PathBuf>,
        /// Samples per label for conditional accuracy.
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Finite-difference check of every primitive, one layer and the loss.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, hide = true)]
        inject_fault: Option<FaultArg>,
    },
    /// Ingestion report of a SMILES file, or the header of a checkpoint.
    Inspect {
        #[arg(long, conflicts_with = "ckpt", required_unless_present = "ckpt")]
        data: Option<PathBuf>,
        #[arg(long)]
        ckpt: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let precision = Precision::from_env()?;
    match cli.command {
        Command::Train {
            config,
            data,
            out,
            threads,
        } => {
            let s = cmd_train(&config, &data, &out, threads, precision, |e| {
                let r = &e.report;
                eprintln!(
                    "epoch {:>3}  total {:.5}  recon {:.5}  kl {:.4}  beta {:.2}",
                    e.epoch, r.total, r.recon, r.kl, r.beta
                );
            })?;
            print!("{}", s.ingest);
            println!("trained on {} molecules; {} checkpoints in {}", s.molecules, s.checkpoints.len(), out.display());
        }
        Command::Sample {
            ckpt,
            n,
            seed,
            mode,
            label,
            out,
            threads,
        } => {
            let label = label.as_deref().map(parse_label).transpose()?;
            let mode = match mode {
                ModeArg::Argmax => Mode::Argmax,
                ModeArg::Sample => Mode::Sample,
            };
            let s = cmd_sample(&ckpt, n, seed, mode, label, &out, threads, precision)?;
            println!(
                "{} samples ({} valid) -> {} and {}",
                s.samples,
                s.valid,
                s.smiles_path.display(),
                s.sidecar_path.display()
            );
        }
        Command::Eval {
            samples,
            data,
            out,
            ckpt,
            n,
            seed,
        } => {
            let args = EvalArgs {
                samples: &samples,
                data: &data,
                out: &out,
                ckpt: ckpt.as_deref(),
                n_per_label: n,
                seed,
            };
            let e = cmd_eval(&args, precision)?;
            for r in mpgvae::eval::report_rows(&e) {
                println!("{:<22} {:>10}  ({}/{})", r[0], r[1], r[2], r[3]);
            }
        }
        Command::Gradcheck { seed, inject_fault } => {
            let fault = inject_fault.map(|FaultArg::SigmoidBackward| Fault::SigmoidBackward);
            for e in &cmd_gradcheck(seed, fault)? {
                println!("PASS {:<28} max rel error {:.3e}", e.name, e.report.max_rel_error());
            }
        }
        Command::Inspect { data, ckpt } => match (data, ckpt) {
            (Some(d), _) => print!("{}", inspect_data(&d)?),
            (None, Some(c)) => print!("{}", inspect_checkpoint(&c)?),
            (None, None) => unreachable!("clap requires one of them"),
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
