//! `dae-lab`: a command-line laboratory for two-stage ("decoupled")
//! autoencoder training on synthetic cluster data.
//!
//! Five subcommands cover the workflow:
//!
//! * `train` — single-stage baselines (plain, variational, quantized)
//! * `dae` — two-stage runs: weakened decoder, then frozen-encoder retrain
//! * `table1` — the replication benchmark against reference accuracies
//! * `oracles` — closed-form analytic cross-checks
//! * `diagnose` — fast engine self-checks
//!
//! Every command writes its artifacts atomically into an output directory
//! and closes with a `manifest.json` (config echo, seeds, versions,
//! artifact hashes, wall-clock, pass/fail summary). Exit codes: 0 success,
//! 1 i/o or internal failure, 2 invalid configuration, 3 numeric abort,
//! 4 failed checks.

pub mod config;
pub mod error;
pub mod manifest;
pub mod runner;
pub mod tools;

use clap::{Args, Parser, Subcommand};
use config::{ExperimentConfig, ExperimentKind, Overrides};
use error::Result;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(
    name = "dae-lab",
    version,
    about = "Desk-scale laboratory for two-stage (decoupled) autoencoder training"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct SharedArgs {
    /// Experiment configuration (strict JSON); defaults used when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Base seed. Replication r runs at seed + r.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for artifacts and the manifest.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// How many replications to run.
    #[arg(long)]
    pub replications: Option<usize>,
}

impl SharedArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            out_dir: self.out_dir.clone(),
            replications: self.replications,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train single-stage baselines (kinds: baseline_ae, baseline_vae, vq_ae).
    Train(SharedArgs),
    /// Two-stage runs: weakened decoder first, then a full decoder against
    /// the frozen encoder (kinds: dae_ae, dae_vae, dae_vq).
    Dae(SharedArgs),
    /// Replication benchmark comparing architectures against references.
    Table1(SharedArgs),
    /// Closed-form analytic cross-checks; failures exit 4.
    Oracles {
        #[command(flatten)]
        shared: SharedArgs,
        /// Fault injection: offset added to the middle branch of the
        /// closed-form transport gap. Nonzero values must trip exactly the
        /// checks that depend on that branch.
        #[arg(long, default_value_t = 0.0)]
        perturb_middle_branch: f64,
    },
    /// Fast engine self-checks (gradients, identities, round-trips).
    Diagnose(SharedArgs),
}

fn load_config(
    shared: &SharedArgs,
    subcommand: &'static str,
    default_kind: ExperimentKind,
    allowed: &[ExperimentKind],
) -> Result<ExperimentConfig> {
    let mut cfg = match &shared.config {
        Some(path) => config::load(path)?,
        None => ExperimentConfig::default_for(default_kind),
    };
    cfg.finalize(subcommand, allowed, &shared.overrides())?;
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Train(shared) => {
            let cfg = load_config(
                shared,
                "train",
                ExperimentKind::BaselineVae,
                &[
                    ExperimentKind::BaselineAe,
                    ExperimentKind::BaselineVae,
                    ExperimentKind::VqAe,
                ],
            )?;
            runner::run_training(&cfg, "train")
        }
        Command::Dae(shared) => {
            let cfg = load_config(
                shared,
                "dae",
                ExperimentKind::DaeVae,
                &[
                    ExperimentKind::DaeAe,
                    ExperimentKind::DaeVae,
                    ExperimentKind::DaeVq,
                ],
            )?;
            runner::run_training(&cfg, "dae")
        }
        Command::Table1(shared) => {
            let cfg = load_config(
                shared,
                "table1",
                ExperimentKind::Table1,
                &[ExperimentKind::Table1],
            )?;
            tools::run_table1_cmd(&cfg)
        }
        Command::Oracles {
            shared,
            perturb_middle_branch,
        } => {
            let cfg = load_config(
                shared,
                "oracles",
                ExperimentKind::Oracles,
                &[ExperimentKind::Oracles],
            )?;
            tools::run_oracles_cmd(&cfg, *perturb_middle_branch)
        }
        Command::Diagnose(shared) => {
            let cfg = load_config(
                shared,
                "diagnose",
                ExperimentKind::Diagnose,
                &[ExperimentKind::Diagnose],
            )?;
            tools::run_diagnose_cmd(&cfg)
        }
    }
}
